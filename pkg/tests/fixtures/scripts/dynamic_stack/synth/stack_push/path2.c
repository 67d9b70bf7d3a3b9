#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) {}

void test_stack_push_path2_room_available(void)
{
    struct stack *s = stack_create(4);
    TEST_ASSERT_EQUAL_INT(0, stack_push(s, 7));
    TEST_ASSERT_EQUAL_size_t(1, s->size);
    TEST_ASSERT_EQUAL_INT(7, s->data[0]);
    stack_destroy(s);
}
