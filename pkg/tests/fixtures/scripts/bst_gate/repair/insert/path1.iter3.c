#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) {}

void test_insert_path1_goes_left(void)
{
    int values[] = {10};
    struct node *root = bst_from_array(values, 1);
    struct node *r = insert(root);
    TEST_ASSERT_EQUAL_PTR(root, r);
    free_tree(root);
}
