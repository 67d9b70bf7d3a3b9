#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) {}

void test_insert_path3_duplicate_ignored(void)
{
    int values[] = {10};
    struct node *root = bst_from_array(values, 1);
    struct node *r = insert(root, 10);
    TEST_ASSERT_EQUAL_PTR(root, r);
    TEST_ASSERT_NULL(root->left);
    TEST_ASSERT_NULL(root->right);
    free_tree(root);
}
