#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) {}

void test_delete_node_path5_two_children(void)
{
    int values[] = {10, 5, 15, 12};
    struct node *root = bst_from_array(values, 4);
    struct node *r = delete_node(root, 10);
    TEST_ASSERT_EQUAL_PTR(root, r);
    TEST_ASSERT_EQUAL_INT(12, r->value);
    TEST_ASSERT_EQUAL_INT(15, r->right->value);
    TEST_ASSERT_NULL(r->right->left);
    free_tree(r);
}
